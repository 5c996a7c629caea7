def new_session_token():
    '''
    Create an unguessable session token for a logged-in user and
    return it as a string.
    '''
